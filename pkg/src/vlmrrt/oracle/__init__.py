from .base import (COT, FEW_SHOT, HISTORY_CAP, PROMPT_MODES, ZERO_SHOT, DirectionOracle,
                   OracleAnswer, OracleError, OracleQuery, TapeExhausted, parse_direction)
from .simulated import (GeometricOracle, NoisyOracle, RecordingOracle, ReplayOracle,
                        geometric_direction, geometric_oracle_answer, load_session,
                        noisy_oracle_answer, ray_progress, replay_oracle_answer)
from .prompts import FEW_SHOT_EXAMPLES, build_prompt
from .remote import RemoteOracle
