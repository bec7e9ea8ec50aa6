"""Allow running the CLI as: python -m softqd --config <path> <command>."""

from softqd.cli import main

if __name__ == "__main__":
    main()
