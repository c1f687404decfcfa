from nox_poetry import Session, session


@session(python=["3.9", "3.10", "3.11", "3.12"])
def tests(session: Session) -> None:
    """Run the test suite."""

    session.install(".")  # Install blaze-mr
    session.install("pytest", "pytest-cases", "hypothesis")  # Install test packages

    session.run("pytest")


@session(python=["3.11"])
def tests_sockets(session: Session) -> None:
    """Run the test suite again with every cluster on forked processes and loopback sockets."""

    session.install(".")
    session.install("pytest", "pytest-cases", "hypothesis")

    session.run("pytest", env={"BLAZE_BACKEND": "sockets"})
