# Copyright (c) edgesplit contributors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the edgesplit split-computing simulator."""

from ._core import (
    ConfigurationError,
    EdgesplitError,
    Encoder,
    Gmm,
    QuantizationSpec,
    battery_life_hours,
    calibrate,
    dirichlet_energy,
    effective_rank,
    frame_energy_mj,
    payload_bytes,
    quantize_dequantize,
    run,
    sliced_wasserstein,
    spectral_gap,
    trace_csv,
    validate_config,
)

__all__ = [
    "ConfigurationError",
    "EdgesplitError",
    "Encoder",
    "Gmm",
    "QuantizationSpec",
    "battery_life_hours",
    "calibrate",
    "dirichlet_energy",
    "effective_rank",
    "frame_energy_mj",
    "payload_bytes",
    "quantize_dequantize",
    "run",
    "sliced_wasserstein",
    "spectral_gap",
    "trace_csv",
    "validate_config",
]
