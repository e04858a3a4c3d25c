#!/usr/bin/env python3
"""
Setup script for rankfusion
Installs the package and the `rankfusion` command
"""

from pathlib import Path

from setuptools import find_packages, setup


def read_requirements():
    """Dependencies from requirements.txt, without comments"""
    lines = Path(__file__).with_name("requirements.txt").read_text().splitlines()
    return [line.split("#")[0].strip() for line in lines if line.split("#")[0].strip()]


setup(
    name="rankfusion",
    version="1.0.0",
    description="Learned fusion of ranked prediction lists, with fingerprint similarity, SMILES tokenization and ELO rating tools",
    long_description=Path(__file__).with_name("README.md").read_text(encoding="utf-8"),
    long_description_content_type="text/markdown",
    packages=find_packages(include=["src", "src.*"]),
    python_requires=">=3.9",
    install_requires=[r for r in read_requirements() if not r.startswith("pytest")],
    extras_require={"test": [r for r in read_requirements() if r.startswith("pytest")]},
    entry_points={"console_scripts": ["rankfusion=src.api.main:main"]},
)
