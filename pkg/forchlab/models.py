from .extensions import db
from datetime import datetime

class RunEntry(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    name = db.Column(db.String(200), nullable=False)
    kind = db.Column(db.String(20), default='run') # 'run', 'full', 'mms' or 'sweep'
    output_dir = db.Column(db.String(500), nullable=True)
    status = db.Column(db.String(20), default='complete') # 'complete', 'incomplete' or 'failed'
    steps = db.Column(db.Integer, nullable=True)
    t_end = db.Column(db.Float, nullable=True)
    wall_seconds = db.Column(db.Float, nullable=True)
    error_message = db.Column(db.String(500), nullable=True)
    created_at = db.Column(db.DateTime, nullable=False, default=datetime.now)

class VerificationEntry(db.Model):
    id = db.Column(db.Integer, primary_key=True)
    theorem_id = db.Column(db.String(50), nullable=False)
    fitted_c = db.Column(db.Float, nullable=True)
    fitted_c_prime = db.Column(db.Float, nullable=True)
    train_max = db.Column(db.Float, nullable=True)
    holdout_max = db.Column(db.Float, nullable=True)
    passed = db.Column(db.Boolean, default=False)
    report_dir = db.Column(db.String(500), nullable=True)
    created_at = db.Column(db.DateTime, nullable=False, default=datetime.now)
