"""Daily check-in conversations and clinician triage for post-surgical remote monitoring."""

__version__ = "0.1.0"
