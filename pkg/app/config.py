"""
Configuration management for the three-vortex simulator
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings"""

    # Logging
    log_level: str = "INFO"

    # Integrator
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    max_step: float = 0.01
    t_max: float = 500.0
    collision_floor: float = 1e-6
    event_time_tol: float = 1e-12

    # Classification
    convergence_tol: float = 1e-4
    convergence_window: int = 10
    similarity_threshold: float = 0.02

    # Geometry
    parabolic_tol: float = 1e-12
    curve_samples: int = 512
    newton_max_iter: int = 100

    # Output & Performance
    csv_digits: int = 17
    max_workers: int = 4

    class Config:
        env_file = ".env"
        env_prefix = "TRIVORTEX_"
        case_sensitive = False


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings
