from deplm.ingest.augment import augment_shift
from deplm.ingest.events import (
    EVENT_DTYPE,
    DvsPreprocConfig,
    SkipSample,
    clip_event_stream,
    denoise_events,
    events_to_pointset,
    make_events,
)
from deplm.ingest.images import image_coords, image_to_pointset, read_idx, write_idx
from deplm.ingest.synthetic import generate_synthetic
