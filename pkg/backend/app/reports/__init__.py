"""JSON and CSV reports."""
