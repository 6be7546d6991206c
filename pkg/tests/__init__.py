"""
Test suite for fromage-lab.
"""
