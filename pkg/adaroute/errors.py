# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Errors - Exception hierarchy shared by all modules.
#
# Copyright (C) 2026  The adaroute developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.


class AdaRouteError(Exception):
    """Base class of every error raised by adaroute."""


class DimensionError(AdaRouteError, ValueError):
    """Operand shapes do not fit together."""


class ConfigurationError(AdaRouteError, ValueError):
    """Invalid extents, kernel sizes, enum values or config files."""


class UsageError(AdaRouteError, RuntimeError):
    """An API was called out of protocol, e.g. backward on a non-scalar."""


class NumericalError(AdaRouteError, ArithmeticError):
    """NaN or Inf appeared, or training diverged."""


class IntegrityError(AdaRouteError):
    """Checkpoint payload does not match the hash in its manifest."""


class MigrationError(AdaRouteError):
    """Checkpoint was written with an unsupported schema version."""
