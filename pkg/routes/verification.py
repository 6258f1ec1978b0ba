"""
Equilibrium verification API routes.
"""
from flask import Blueprint, jsonify
import logging

from contest_service import equilibrium_service
from equilibrium import ConstructionError
from measures import EXACT_TOL, MeasureError
from verify import DEFAULT_LP_GRID, verification_report
from .measure_input import number_field, require_measure

logger = logging.getLogger(__name__)

verification = Blueprint('verification', __name__, url_prefix='/api/verify')

MAX_GRID_SIZE = 1024


@verification.route('', methods=['POST'])
@require_measure
def verify_equilibrium(data: dict):
    """Check the characterization, certificate and best response for the solved law."""
    try:
        theta = number_field(data, 'theta', 0.0, float, 0.0)
        if not theta < 1:
            raise ValueError("theta must be < 1")
        tol = number_field(data, 'tol', EXACT_TOL, float)
        if not tol > 0:
            raise ValueError("tol must be > 0")
        grid_size = number_field(data, 'grid_size', DEFAULT_LP_GRID, int, 2, MAX_GRID_SIZE)
    except ValueError as e:
        return jsonify({'error': str(e)}), 400

    try:
        mu, law, report = equilibrium_service.get_equilibrium(data['measure'])
        result = verification_report(law, mu, report, theta, tol, grid_size)
        result['law'] = law.to_dict()
        if not result['passed']:
            logger.warning(f"Verification failed: {result['astar']['worst_violation']}")
            return jsonify(result), 422
        return jsonify(result)

    except ConstructionError as e:
        logger.error(f"Construction failed: {e}")
        return jsonify({'error': str(e)}), 422
    except MeasureError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error verifying equilibrium: {e}")
        return jsonify({'error': 'Failed to verify equilibrium'}), 500
