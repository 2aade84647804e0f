"""Thermostatted linear oscillator networks: structure, exact Gaussian law, Monte Carlo."""
