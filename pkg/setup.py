from setuptools import setup, find_packages

setup(
    name="acvg",
    version="1.0",
    python_requires=">=3.10",
    packages=find_packages(),
    package_data={"acvg": ["config.txt"]},
    install_requires=["numpy", "scipy", "Pillow", "loguru", "tqdm", "wandb"],
    entry_points={"console_scripts": ["acvg = acvg.cli:run"]},
)
