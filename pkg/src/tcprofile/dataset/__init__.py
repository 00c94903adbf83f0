from .archive import load_archive, save_archive
from .besttrack import BestTrackFix, read_best_track, write_best_track
from .container import ArchiveError, ChecksumError, TruncatedFileError, VersionMismatchError
from .records import DatasetSplit, SampleRecord, channel_means, encode_aux, impute_nan, split_by_year
from .synth import SynthConfig, synth_dataset, synth_storm

__all__ = [
    "ArchiveError",
    "BestTrackFix",
    "ChecksumError",
    "DatasetSplit",
    "SampleRecord",
    "SynthConfig",
    "TruncatedFileError",
    "VersionMismatchError",
    "channel_means",
    "encode_aux",
    "impute_nan",
    "load_archive",
    "read_best_track",
    "save_archive",
    "split_by_year",
    "synth_dataset",
    "synth_storm",
    "write_best_track",
]
