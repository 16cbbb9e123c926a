# Copyright 2026 The previvor Authors
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


"""Restoration of faded silk paintings: luminance enhancement and hue correction."""

from ._previvor import (
    Error,
    apply_linear_degradation,
    colorfulness,
    compute_prior_mask,
    default_config,
    delta_colorfulness,
    extract_prior,
    lab_to_rgb,
    load_config,
    psnr,
    read_png,
    restore,
    rgb_to_lab,
    ssim,
    write_png,
)

__all__ = [
    "Error",
    "apply_linear_degradation",
    "colorfulness",
    "compute_prior_mask",
    "default_config",
    "delta_colorfulness",
    "extract_prior",
    "lab_to_rgb",
    "load_config",
    "psnr",
    "read_png",
    "restore",
    "rgb_to_lab",
    "ssim",
    "write_png",
]
