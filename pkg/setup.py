from setuptools import find_packages, setup

setup(
    name="timelyrec",
    version="1.0.0.dev0",
    description="Time-aware recommendation with multi-granularity periodic patterns",
    author="timelyrec developers",
    license="3 Clause BSD",
    packages=find_packages(include=["timelyrec", "timelyrec.*"]),
    include_package_data=True,
    package_data={"timelyrec": ["*.tpl"]},
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.20",
        "pandas>=1.3",
        "ruamel.yaml==0.17.*",
        "jinja2",
        "pluggy==1.*",
    ],
    entry_points={
        "console_scripts": [
            "timelyrec = timelyrec.cli:main",
        ]
    },
)
