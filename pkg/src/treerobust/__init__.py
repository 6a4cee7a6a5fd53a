"""Robust utility maximisation on finite scenario trees."""
