"""assistfuzz: coverage-guided fuzzing with concolic drilling and
human-assist tasklets over the HVM1 micro-VM."""

__version__ = "0.1.0"
