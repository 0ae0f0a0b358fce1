"""Setup script for the blocksinger package."""

from setuptools import setup, find_packages

setup(
    name="blocksinger",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    install_requires=[
        line.strip() for line in open("requirements.txt")
        if line.strip() and not line.startswith("#") and not line.startswith("pytest")
    ],
    extras_require={"test": ["pytest==7.4.4"]},
    python_requires=">=3.9",
    description="Block-wise ConvLSTM conditional WGAN for singing voice synthesis",
    entry_points={
        "console_scripts": ["blocksinger=blocksinger.__main__:main"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Multimedia :: Sound/Audio :: Speech",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
