"""Run the sidecar under uvicorn, configured from the environment."""

import os

import uvicorn

from .service import ENV_PORT, ModelRuntime, SidecarSettings, create_app


def main():
    settings = SidecarSettings.from_env()
    runtime = ModelRuntime(settings)
    app = create_app(runtime)
    port = int(os.environ.get(ENV_PORT, "8601"))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
