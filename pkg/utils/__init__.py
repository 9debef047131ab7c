"""Standalone helper scripts: runlog plotting and checkpoint inspection"""
