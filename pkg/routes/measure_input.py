"""
Request body parsing shared by the API routes.
"""
from flask import jsonify, request
from functools import wraps
import logging

from measures import MeasureError, resolve_measure

logger = logging.getLogger(__name__)


def require_measure(f):
    """Decorator to ensure the JSON body carries a valid measure spec."""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        data = request.get_json(silent=True)
        if not isinstance(data, dict) or 'measure' not in data:
            return jsonify({'error': 'Request body must be a JSON object with a "measure" field'}), 400
        try:
            # Validate early so malformed specs never reach the solver
            resolve_measure(data['measure'], '$.measure')
        except MeasureError as e:
            return jsonify({'error': str(e)}), 400
        return f(data, *args, **kwargs)
    return decorated_function


def number_field(data: dict, name: str, default, cast=float, low=None, high=None):
    """Read an optional numeric field; raises ValueError naming the field."""
    value = data.get(name, default)
    if isinstance(value, bool):
        raise ValueError(f"{name} must be a number")
    try:
        value = cast(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number")
    if low is not None and value < low:
        raise ValueError(f"{name} must be >= {low}")
    if high is not None and value > high:
        raise ValueError(f"{name} must be <= {high}")
    return value
