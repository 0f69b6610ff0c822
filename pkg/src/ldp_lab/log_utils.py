"""
Print-based status logging

Status lines go to stderr so stdout stays free for the JSON records the CLI
prints; nothing logged here ever ends up in an output file.
"""

import sys

# Set to True to enable verbose debug logging
DEBUG = False
VERBOSE = True


def set_verbose(verbose: bool, debug: bool = None):
    global VERBOSE, DEBUG
    VERBOSE = bool(verbose)
    if debug is not None:
        DEBUG = bool(debug)


def log(message):
    if VERBOSE:
        print(message, file=sys.stderr)


def warn(message):
    print(f"Warning: {message}", file=sys.stderr)


def error(message):
    print(f"ERROR {message}", file=sys.stderr)


def debug_log(message):
    """Log debug messages only if DEBUG is enabled"""
    if DEBUG:
        print(f"DEBUG: {message}", file=sys.stderr)
