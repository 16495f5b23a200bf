from hydra import compose, initialize


def get_config(overrides=None):
    """Composes the command line configuration outside of a Hydra run, for
    notebooks and tests. ``paths.output_dir`` must be overridden since it
    refers to the Hydra runtime."""

    with initialize(version_base="1.3", config_path="."):
        return compose(config_name="core.yaml", overrides=overrides or [])
