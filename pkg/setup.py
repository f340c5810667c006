from setuptools import setup, find_packages

setup(
    name="gleason_grading_engine",
    version="0.1.0",
    packages=find_packages(include=["services*"]),
    install_requires=[
        "fastapi>=0.110",
        "uvicorn[standard]>=0.23",
        "sqlalchemy>=2.0",
        "pydantic>=2.5",
        "python-dotenv>=1.0",
        "python-multipart>=0.0.9",
        "numpy>=1.26",
        "scipy>=1.11",
        "pandas>=2.1",
        "scikit-learn>=1.3",
    ],
    entry_points={"console_scripts": ["gleason-engine=services.cli.main:main"]},
    description="Gleason grading from segmentation masks, expert consensus and reader-study statistics",
)
