from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Output
    output_dir: str = "results"
    log_level: str = "INFO"
    table_digits: int = 6

    # Structure checks
    structure_tol: float = 1e-12

    # Verification (relative to the oscillation scale of the profile)
    verify_tol: float = 1e-9

    # 2-D solver
    fdm_epsilon: float = 1e-6
    fdm_tol: float = 1e-8
    fdm_max_iter: int = 200
    sor_max_sweeps: int = 20000

    # Radial solver
    radial_blowup_cap: float = 1e12
    shooting_derivative_cap: float = 1e6

    # Energy diagnostic: epsilon shift as a fraction of the oscillation
    energy_epsilon_factor: float = 1e-8

    # Family sweeps
    max_workers: int = 4


settings = Settings()
