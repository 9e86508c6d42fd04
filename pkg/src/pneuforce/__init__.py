"""Pneumatic force sensor simulator and force-calibration toolkit."""
