"""Statistics of cognitive-radio capacity under path loss, lognormal
shadowing and Rayleigh fading."""

__version__ = "0.1.0"
