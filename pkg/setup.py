"""Setup script for RBC lifecycle."""

from setuptools import setup, find_packages

setup(
    name="rbc-lifecycle",
    version="0.1.0",
    description="Gather, submit, execute, retrieve and terminate analytics jobs on cloud resources",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "fastmcp>=2.0.0",
        "pydantic>=2.0.0",
        "filelock>=3.0",
        "mcp>=1.0,<2",
    ],
    extras_require={
        "dev": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "rbc=rbc_lifecycle.cli:main",
            "RBC_GatherResource=rbc_lifecycle.cli:gather_main",
            "RBC_SubmitJob=rbc_lifecycle.cli:submit_main",
            "RBC_ExecuteJob=rbc_lifecycle.cli:execute_main",
            "RBC_GetResults=rbc_lifecycle.cli:results_main",
            "RBC_TerminateResource=rbc_lifecycle.cli:terminate_main",
            "rbc-server=rbc_lifecycle.rbc_mcp:main",
        ],
    },
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
