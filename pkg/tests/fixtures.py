"""Shared test inputs."""

# Annotated workflow definition with job-level and step-level carbon hints,
# byte-for-byte as published (including the surrounding document markers).
ANNOTATED_WORKFLOW = """\
  ---
  name: CI/CD jobs
  on: [push]
  jobs:
    job-a:
      runs-on: ubuntu-latest
      carbon-aware: yes
      steps:
        - name: My first step
          uses: actions/hello_world@main
          with:
            duration: 1h
            deadline: 3h
            allowed-regions: [eu-central-1]
  ---
"""
