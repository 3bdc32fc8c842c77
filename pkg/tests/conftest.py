import pytest

from sgcap.datamodel import Config, Rng, Vocabulary, VideoFeatures
from sgcap.model import AblationFlags, init_model


@pytest.fixture
def tiny_vocab():
    return Vocabulary(tokens=("<pad>", "<sos>", "<eos>", "<unk>",
                              "cat", "dog", "runs", "sits"))


@pytest.fixture
def tiny_config():
    return Config(n_frames=4, d_appearance=2, d_motion=2, d_word=4,
                  d_hidden=4, max_len=6, seed=11)


@pytest.fixture
def tiny_model(tiny_config, tiny_vocab):
    return init_model(tiny_config, AblationFlags(), tiny_vocab, Rng(11))


def make_video(config: Config, seed: int = 5, video_id: str = "v0") -> VideoFeatures:
    rng = Rng(seed)
    return VideoFeatures(
        frames=rng.normal(0.0, 1.0, (config.n_frames, config.d_video)),
        video_id=video_id,
        d_appearance=config.d_appearance,
        d_motion=config.d_motion,
    )


@pytest.fixture
def tiny_video(tiny_config):
    return make_video(tiny_config)
