"""Test runner script"""
import os
import subprocess
import sys
from collections import OrderedDict
from pathlib import Path


def get_test_commands():
    """Get all available test commands"""
    if os.name == 'nt':  # Windows
        pytest_path = str(Path('venv/Scripts/pytest'))
    else:  # Linux/macOS
        pytest_path = str(Path('venv/bin/pytest'))

    base_cmd = [pytest_path, "-v"]
    test_dir = Path("tests/test_examples")

    # Modules in dependency order: each builds on the ones above it
    commands = OrderedDict([
        ("all", base_cmd + ["tests"]),
        ("sigform", base_cmd + [str(test_dir / "test_01_sigform.py")]),
        ("mstruct", base_cmd + [str(test_dir / "test_02_mstruct.py")]),
        ("eval", base_cmd + [str(test_dir / "test_03_evaluator.py")]),
        ("ultra", base_cmd + [str(test_dir / "test_04_ultra.py")]),
        ("axioms", base_cmd + [str(test_dir / "test_05_axioms.py")]),
        ("typespace", base_cmd + [str(test_dir / "test_06_typespace.py")]),
        ("catgrp", base_cmd + [str(test_dir / "test_07_catgrp.py")]),
        ("cli", base_cmd + [str(test_dir / "test_08_cli.py")]),
        ("acceptance", base_cmd + [str(test_dir / "test_09_acceptance.py")]),
    ])
    return commands


def run_with_options(command, fast=False, debug=False):
    """Add optional parameters to any test command"""
    if fast:
        command.extend(["-m", "not slow"])
    if debug:
        command.extend(["-s", "--pdb"])
    try:
        subprocess.run(command, check=True)
    except FileNotFoundError:
        print("Error: pytest not found. Make sure you have activated the virtual environment:")
        if os.name == 'nt':  # Windows
            print("  Run: .\\venv\\Scripts\\activate")
        else:  # Linux/macOS
            print("  Run: source venv/bin/activate")
        sys.exit(1)
    except subprocess.CalledProcessError as e:
        print(f"Error running tests: {e}")
        sys.exit(1)


def print_help():
    """Print help message."""
    print("\nAvailable commands:")
    print("  run <suite>     - Run the named test suite")
    print("  help            - Show this help message")
    print("\nAvailable suites:")
    for name in get_test_commands():
        print(f"  {name}")
    print("\nOptions:")
    print("  --fast          - Skip tests marked slow")
    print("  --debug         - Show output and drop into pdb on failure")


if __name__ == "__main__":
    args = sys.argv[1:]

    if not args or args[0] == "help":
        print_help()
        sys.exit()

    fast = "--fast" in args
    debug = "--debug" in args
    args = [arg for arg in args if arg not in ["--fast", "--debug"]]

    if len(args) >= 2 and args[0] == "run":
        commands = get_test_commands()
        suite = args[1]

        if suite in commands:
            run_with_options(commands[suite], fast, debug)
        else:
            print(f"Suite '{suite}' not found.")
            print(f"Available suites: {', '.join(commands.keys())}")
    else:
        print("Invalid command.")
        print_help()
