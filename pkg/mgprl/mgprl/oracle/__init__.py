#!/usr/bin/env python3

import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())
