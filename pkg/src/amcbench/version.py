"""Tool and on-disk format versions."""

TOOL_VERSION = "0.1.0"

# Binary corpus files (magic "AMCI").
CORPUS_FORMAT_VERSION = 1

# Binary checkpoint files (magic "AMCP").
CHECKPOINT_FORMAT_VERSION = 1
