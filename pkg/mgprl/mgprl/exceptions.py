#!/usr/bin/env python3


class MgprlError(Exception):
    pass


class NoPluginLoadedError(MgprlError):
    pass


class ObjectNotFoundError(MgprlError):
    pass


class UnknownAccessPointError(ObjectNotFoundError):
    pass


class ConfigError(MgprlError):
    """Invalid or unreadable configuration.

    The message always starts with the dotted key path of the offending entry,
    so a user can find it in the YAML file.
    """
    def __init__(self, key_path, message):
        self.key_path = key_path
        super().__init__("{0}: {1}".format(key_path, message))


class InvalidParameterError(MgprlError, ValueError):
    pass


class OutOfGridError(MgprlError, IndexError):
    pass


class InvalidQueryError(MgprlError, ValueError):
    pass


class DegenerateDataError(MgprlError):
    pass


class FactorizationError(MgprlError):
    pass


class InsufficientOverlapError(MgprlError):
    pass


class AlignmentRejectedError(MgprlError):
    pass


class WireFormatError(MgprlError):
    pass


class EmptyBundleError(MgprlError):
    pass
