from .front import FrontParams, front_reference, gen_maybenot_front, gen_pipelined_front
from .regulator import (RegulatorParams, gen_regulator_client, gen_regulator_relay,
                        regulator_reference)
from .surakav import (BurstSequence, SurakavParams, burst_thresholds, gen_surakav_machines,
                      surakav_reference)
