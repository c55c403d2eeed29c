from . import geometry, channel, tdd_schedule, scheduler, metrics, scenario
