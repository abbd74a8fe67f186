"""Small configurations shared by the tests."""

from attnloco.config import EnvSection, ModelConfig, RunConfig, StageSection, StagesSection
from attnloco.ppo import PPOConfig


def small_config(encoder="primary", epochs=2, num_envs=3, **env):
    return RunConfig(
        encoder=encoder,
        checkpoint_every=0,
        model=ModelConfig(map_length=5, map_width=3, dim=8, heads=2, cnn_hidden=2, kernel=3, hidden=(8,)),
        env=EnvSection(num_envs=num_envs, **env),
        ppo=PPOConfig(steps_per_env=6),
        stages=StagesSection(StageSection(epochs=epochs, families=("flat",)), StageSection(epochs=epochs, families=("flat",))),
    )
