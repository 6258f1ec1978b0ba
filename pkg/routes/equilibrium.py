"""
Equilibrium solving and discretization API routes.
"""
from flask import Blueprint, jsonify, request
import logging

from contest_service import equilibrium_service
from equilibrium import DEFAULT_MAX_LEVEL, SCHEMES, ConstructionError, discretize
from measures import DISCRETIZATION_TOL, MeasureError, resolve_measure
from .measure_input import number_field, require_measure

logger = logging.getLogger(__name__)

equilibrium = Blueprint('equilibrium', __name__, url_prefix='/api/equilibrium')

MAX_DISCRETIZE_LEVEL = 16


@equilibrium.route('/solve', methods=['POST'])
@require_measure
def solve_equilibrium(data: dict):
    """Solve for the equilibrium target law of the posted initial law."""
    try:
        tol = number_field(data, 'tol', DISCRETIZATION_TOL, float)
        max_level = number_field(data, 'max_level', DEFAULT_MAX_LEVEL, int, 1, MAX_DISCRETIZE_LEVEL)
        if not tol > 0:
            raise ValueError("tol must be > 0")
    except ValueError as e:
        return jsonify({'error': str(e)}), 400

    try:
        # Check if force refresh is requested
        force_refresh = request.args.get('force_refresh', 'false').lower() == 'true'
        if force_refresh:
            equilibrium_service.clear_cache(data['measure'], tol, max_level)

        _, law, report = equilibrium_service.get_equilibrium(data['measure'], tol, max_level)
        return jsonify({'law': law.to_dict(), 'convergence': report.to_dict()})

    except ConstructionError as e:
        logger.error(f"Construction failed: {e}")
        return jsonify({'error': str(e)}), 422
    except MeasureError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error solving equilibrium: {e}")
        return jsonify({'error': 'Failed to solve equilibrium'}), 500


@equilibrium.route('/discretize', methods=['POST'])
@require_measure
def discretize_measure(data: dict):
    """Quantile discretization with 2^level bins."""
    try:
        level = number_field(data, 'level', 4, int, 0, MAX_DISCRETIZE_LEVEL)
        scheme = data.get('scheme', 'dyadic')
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {', '.join(SCHEMES)}")
    except ValueError as e:
        return jsonify({'error': str(e)}), 400

    try:
        mu = resolve_measure(data['measure'], '$.measure')
        chi = discretize(mu, 2 ** level, scheme)
        return jsonify(chi.to_dict())
    except MeasureError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error discretizing measure: {e}")
        return jsonify({'error': 'Failed to discretize measure'}), 500
