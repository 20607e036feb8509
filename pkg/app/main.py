# app/main.py
from app.cli.commands import cli


def main() -> None:
    cli(prog_name="bme-spot")


if __name__ == "__main__":
    main()
