"""
Gunicorn entry point (main:app) for the contest equilibrium service.
"""
import os

from app import create_app

app = create_app(os.environ.get('FLASK_ENV'))

if __name__ == '__main__':
    # Local runs only; App Engine starts gunicorn from app.yaml
    app.run(host='127.0.0.1', port=int(os.environ.get('PORT', 8080)), debug=app.config['DEBUG'])
