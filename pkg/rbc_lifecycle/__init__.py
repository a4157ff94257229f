"""RBC lifecycle - gather, submit, execute, retrieve and terminate analytics jobs on cloud resources."""

__version__ = "0.1.0"
