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

"""Exception types raised by intentformer.

Each concrete error also derives from the closest builtin exception so
callers can catch either the intentformer type or the builtin one.
"""


class IntentformerError(Exception):
    pass


class DimensionError(IntentformerError, ValueError):
    pass


class NumericError(IntentformerError, ArithmeticError):
    pass


class DegenerateInputError(IntentformerError, ValueError):
    pass


class UsageError(IntentformerError, ValueError):
    pass


class ConfigError(IntentformerError, ValueError):
    pass


class DataError(IntentformerError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line_number=None):
        if line_number is not None:
            message = "%s:%s: %s" % (path or "<csv>", line_number, message)
        DataError.__init__(self, message)
        self.path = path
        self.line_number = line_number


class TrainingDivergedError(NumericError):
    def __init__(self, message, dump_path=None):
        if dump_path:
            message = "%s (diagnostics written to %s)" % (message, dump_path)
        NumericError.__init__(self, message)
        self.dump_path = dump_path
