"""voxloco: a desk-scale voxel-terrain quadruped locomotion laboratory."""

__version__ = "0.1.0"
