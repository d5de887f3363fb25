"""Nonlocal variational solver and asymptotic-compatibility harness."""
