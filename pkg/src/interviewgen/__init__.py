"""Knowledge-grounded mock-interview question generation.

A three-component model (dialog generator, knowledge selector over resume
fields, decoding manager) trained with a low-resource protocol: both big
components pre-train on plentiful ungrounded dialogs / job-resume matching
pairs, and only the small manager needs grounded interview dialogs.
"""

__version__ = "0.1.0"
