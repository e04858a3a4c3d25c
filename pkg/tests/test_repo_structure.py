import json
from pathlib import Path

ROOT = Path(__file__).parent.parent


def test_key_directories_exist():
    """Verify the presence of essential project directories."""
    expected_directories = ["src/api", "src/core", "src/processors", "src/services", "tests", "samples"]
    for directory in expected_directories:
        assert (ROOT / directory).is_dir(), f"Directory '{directory}' does not exist."


def test_key_files_exist():
    """Verify the presence of essential project files."""
    expected_files = [
        "requirements.txt",
        "README.md",
        "run.py",
        "setup.py",
        "src/api/main.py",
        "src/core/config.py",
        "src/core/storage.py",
        "src/services/ranking.py",
        "src/services/theta_learner.py",
    ]
    for file in expected_files:
        assert (ROOT / file).is_file(), f"File '{file}' does not exist."


def test_requirements_cover_the_stack():
    """The numeric and validation stack must be declared."""
    text = (ROOT / "requirements.txt").read_text().lower()
    for package in ("numpy", "pandas", "scipy", "pydantic", "python-dotenv", "tqdm", "pytest"):
        assert package in text, f"'{package}' missing from requirements.txt"


def test_sample_files_are_valid_jsonl():
    """Every sample JSONL line parses."""
    for path in (ROOT / "samples").glob("*.jsonl"):
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                json.loads(line)
