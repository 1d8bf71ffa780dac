# forms.py - WTForms validation of command-line run settings
import math

from wtforms import Form, IntegerField, FloatField, StringField
from wtforms.validators import NumberRange, AnyOf, ValidationError

RATE_MODES = ['embedding_weighted', 'unit_rate']


class ExploreForm(Form):
    """Bound, state cap and worker threads for explore/check"""
    bound = IntegerField('bound', validators=[
        NumberRange(min=0, max=64, message='bound must be between 0 and 64')
    ])

    state_cap = IntegerField('state-cap', validators=[
        NumberRange(min=1, message='state cap must be at least 1')
    ])

    threads = IntegerField('threads', validators=[
        NumberRange(min=1, max=64, message='threads must be between 1 and 64')
    ])

    rate_mode = StringField('rate-mode', validators=[
        AnyOf(RATE_MODES, message='rate mode must be embedding_weighted or unit_rate')
    ])


class SolveForm(Form):
    max_len = IntegerField('max-len', validators=[
        NumberRange(min=0, max=16, message='max length must be between 0 and 16')
    ])

    threads = IntegerField('threads', validators=[
        NumberRange(min=1, max=64, message='threads must be between 1 and 64')
    ])


class SimulateForm(Form):
    """Budget and seed of a simulation run"""
    events = IntegerField('events')

    seed = IntegerField('seed', validators=[
        NumberRange(min=0, message='seed must be non-negative')
    ])

    time = FloatField('time')

    rate_mode = StringField('rate-mode', validators=[
        AnyOf(RATE_MODES, message='rate mode must be embedding_weighted or unit_rate')
    ])

    def validate_events(self, events):
        if events.data is not None and events.data < 0:
            raise ValidationError('events must be non-negative')

    def validate_time(self, time):
        """Time budget is optional but must be a positive finite number when given"""
        if time.data is not None and not (math.isfinite(time.data) and time.data > 0):
            raise ValidationError('time must be a positive number')


class PetriForm(SimulateForm):
    e1 = FloatField('e1')
    e2 = FloatField('e2')

    n_max = IntegerField('n-max', validators=[
        NumberRange(min=0, max=1000, message='n-max must be between 0 and 1000')
    ])

    m_max = IntegerField('m-max', validators=[
        NumberRange(min=0, max=1000, message='m-max must be between 0 and 1000')
    ])

    def validate_e1(self, e1):
        if e1.data is None or not math.isfinite(e1.data):
            raise ValidationError('E1 must be a finite number')

    def validate_e2(self, e2):
        if e2.data is None or not math.isfinite(e2.data):
            raise ValidationError('E2 must be a finite number')


def first_error(form):
    """(flag, message) of the first failing field, in declaration order"""
    for field in form:
        if field.errors:
            return field.label.text, field.errors[0]
    return None, None
