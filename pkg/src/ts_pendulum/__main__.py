"""Entry point for the ts-pendulum CLI."""

import sys

from ts_pendulum.app import PendulumApp


def main() -> None:
    """Run the ts-pendulum application."""
    app = PendulumApp()
    sys.exit(app.run())


if __name__ == "__main__":
    main()
