"""
Monte Carlo contest simulation API routes.
"""
from flask import Blueprint, jsonify
import logging

from contest_service import equilibrium_service
from equilibrium import ConstructionError
from measures import MeasureError
from simulate import simulate
from .measure_input import number_field, require_measure

logger = logging.getLogger(__name__)

simulation = Blueprint('simulation', __name__, url_prefix='/api/simulate')

MAX_TRIALS = 1_000_000


@simulation.route('', methods=['POST'])
@require_measure
def simulate_contest(data: dict):
    """Play the equilibrium law against itself."""
    try:
        theta = number_field(data, 'theta', 0.0, float, 0.0)
        if not theta < 1:
            raise ValueError("theta must be < 1")
        n = number_field(data, 'n', 100000, int, 1, MAX_TRIALS)
        seed = number_field(data, 'seed', 0, int, 0)
    except ValueError as e:
        return jsonify({'error': str(e)}), 400

    try:
        _, law, _ = equilibrium_service.get_equilibrium(data['measure'])
        result = simulate(law, law, theta, n, seed)
        return jsonify(result.to_dict())

    except ConstructionError as e:
        logger.error(f"Construction failed: {e}")
        return jsonify({'error': str(e)}), 422
    except MeasureError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error simulating contest: {e}")
        return jsonify({'error': 'Failed to simulate contest'}), 500
