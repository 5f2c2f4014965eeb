"""auto4d: offline 4D auto-labeling workbench.

Refines cheap, noisy per-frame vehicle detections into temporally consistent
trajectories (one fixed size per object plus a smoothed motion path) and
quantifies label quality against ground truth from a built-in synthetic LiDAR
scene simulator.
"""

__version__ = "0.1.0"
