"""Test suite for lowrank_sdc and the experiment harness"""
