"""Deterministic synthetic datasets: teacher-neuron fitting, digit adding, delayed recall."""

from .datasets import (AddingTask, Dataset, RecallTask, TeacherTask, build_dataset, read_dataset,
                       summarize, write_dataset)
from .digits import AddingSample, DigitSample, digit_template, gen_adding, gen_digit, make_adding
from .raster import SpikeRaster, rebin
from .recall import gen_delayed_recall
from .teacher import (TeacherConfig, TeacherTrace, alif_teacher_config, gen_teacher_io,
                      make_teacher, teacher_trace)

__all__ = [
    "AddingSample", "AddingTask", "Dataset", "DigitSample", "RecallTask", "SpikeRaster",
    "TeacherConfig", "TeacherTask", "TeacherTrace", "alif_teacher_config", "build_dataset",
    "digit_template", "gen_adding", "gen_delayed_recall", "gen_digit", "gen_teacher_io",
    "make_adding", "make_teacher", "read_dataset", "rebin", "summarize", "teacher_trace",
    "write_dataset",
]
