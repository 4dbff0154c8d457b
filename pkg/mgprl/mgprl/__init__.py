#!/usr/bin/env python3
"""mgprl

Multi-robot relative localization from Wi-Fi RSSI: co-regionalized GP field
prediction, uncertainty-weighted AP localization and weighted hull alignment.
"""
import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
