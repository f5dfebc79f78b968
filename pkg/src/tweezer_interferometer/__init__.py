"""Simulation of an atom interferometer built from moving optical tweezers.

Modules
-------
units
    Physical constants, species and the internal unit system (um, ms, hbar = 1).
potentials
    Gaussian tweezer scenes, splitter schedules and external potentials.
solver
    Grids, eigenstates and split-step Fourier propagation.
protocols
    Two- and three-tweezer splitters, combiners, full loops and the
    instantaneous spectrum.
tight_binding
    Reduced two- and three-level models of the splitter.
noise
    Common-mode intensity noise and shot-noise phase.
campaign
    Realization tables, fringe scans and phase-uncertainty estimates.
applications
    Gravity, Casimir-Polder and big-G sensitivity calculators.
cli
    Config-driven command-line runner.
"""

__version__ = "0.1.0"
