"""Synthetic highway digital twin: simulation, windows, datasets, replay."""

from .sim import Frame, FrameVehicle, Sim, SimConfig, step_sim
from .neighbors import extract_neighbors, build_window, lane_index
from .dataset import (generate_dataset, label_window, load_dataset,
                      save_dataset)
from .replay import read_frames, stream_replay, write_frames
