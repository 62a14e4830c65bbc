"""Quaternion convolutional networks for speech emotion recognition."""

from .quaternion import Quaternion, UnitAxisQuaternion, add, conjugate, hamilton, inverse, norm, rotate, scale

__all__ = [
    "Quaternion",
    "UnitAxisQuaternion",
    "add",
    "conjugate",
    "hamilton",
    "inverse",
    "norm",
    "rotate",
    "scale",
]
__version__ = "0.1.0"
