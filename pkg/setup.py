from setuptools import setup, find_packages

setup(
    name="nblock-coalescence",
    version="1.0.0",
    description="Coalescence, meeting and collision statistics of n-block Markov chains",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=["main"],
    install_requires=[
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "python-dotenv>=1.0.0",
    ],
    python_requires=">=3.9",
    entry_points={
        'console_scripts': [
            'nblock-coalesce=main:main',
        ],
    },
)
