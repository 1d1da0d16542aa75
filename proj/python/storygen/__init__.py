# Copyright 2026 The Storygen Authors.
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
"""Python surface of the storygen pipeline.

The compiled ``_storygen`` extension lives inside this package when built
via the wheel, or on ``sys.path`` (the CMake build directory) during
development.
"""

try:
    from ._storygen import *  # noqa: F401,F403
    from ._storygen import __version__  # noqa: F401
except ImportError:  # development layout: extension on sys.path
    from _storygen import *  # noqa: F401,F403
    from _storygen import __version__  # noqa: F401
