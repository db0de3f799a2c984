# Middleware Package
from middleware.error_handlers import (
    register_error_handlers,
    EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_DATA, EXIT_NUMERIC,
    EXIT_DOMAIN, EXIT_ACCEPTANCE_FAILED, EXIT_INTERRUPTED,
)
