"""Teacher feature providers"""

from src.teacher.providers import (
    CachedTeacher,
    SyntheticTeacher,
    SyntheticTeacherSpec,
    TeacherProvider,
    cached_teacher,
    export_teacher_cache,
    synthetic_teacher,
)
from src.teacher.text_encoder import SyntheticTextEncoder

__all__ = [
    "CachedTeacher",
    "SyntheticTeacher",
    "SyntheticTeacherSpec",
    "SyntheticTextEncoder",
    "TeacherProvider",
    "cached_teacher",
    "export_teacher_cache",
    "synthetic_teacher",
]
