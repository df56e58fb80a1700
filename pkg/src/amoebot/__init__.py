"""Amoebot model simulator with reconfigurable circuits and shortest-path forests."""
