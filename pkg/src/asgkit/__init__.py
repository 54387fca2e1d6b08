"""Sequence-level ASR training criteria with exact desk-scale oracles.

The package implements the globally normalized ASG loss, a letter-level
transcription-noise model, and a noise-aware loss that searches over
clean-transcription candidates with a differentiable beam search. Every
approximation has an exponential-time exhaustive counterpart in
``asgkit.oracle`` so the fast paths are testable end to end.
"""

from .asg import LossResult, Transitions, asg_loss, constrained_score, normalizer, path_score
from .beam import (BeamConfig, BeamTranscription, beam_score, beam_transcriptions,
                   exhaustive_beam_size, noisy_asg_loss)
from .errors import (AsgKitError, DimensionMismatch, EmptyBeam, EmptyCorpus, IdMismatch,
                     InvalidFactor, LengthMismatch, LimitExceeded, MalformedSequence,
                     NonFinite, NonFiniteLoss, TranscriptionTooLong, TripleRepeat)
from .eval import (DecodeResult, EditCounts, align, edit_distance, letter_error_rate,
                   ler_pair, viterbi, word_error_rate)
from .noise import (NoiseModel, corrupt, estimate, log_likelihood,
                    log_likelihood_sub_only, reference_confusions, scale)
from .numerics import NEG_INF, finite_diff_check, logadd, logadd_all
from .oracle import (EnumLimit, exhaustive_constrained_score, exhaustive_noise_likelihood,
                     exhaustive_noisy_score, exhaustive_normalizer)
from .tokens import (DEFAULT_LETTERS, Alphabet, collapse, read_transcripts,
                     write_transcripts)
from .train import (AcousticMLP, EpochStats, SyntheticSpec, TrainConfig, Utterance,
                    generate_dataset, load_checkpoint, save_checkpoint, train_loop)

__version__ = "0.1.0"
