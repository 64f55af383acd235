from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as f:
    long_description = f.read()

with open("requirements.txt", "r", encoding="utf-8") as f:
    install_requires = [line.strip() for line in f if line.strip() and not line.startswith("#")]

setup(
    name="earlock",
    version="0.1.0",
    description="Ear identification by colour-segmented SIFT fusion",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="Earlock maintainers",
    packages=find_packages(include=["earlock", "earlock.*"]),
    include_package_data=True,
    install_requires=install_requires,
    extras_require={"test": ["pytest>=7.4", "hypothesis>=6.80"]},
    entry_points={"console_scripts": ["earlock=earlock.earlock.cli:main"]},
)
