"""Deferred import errors for optional packages."""
from typing import Any, Optional


class ModuleImportRaiser:
    """Stand-in for an optional package which could not be imported.

    Importing naforest succeeds without the package, the ImportError is raised
    only when the stand-in is used. Currently only the TensorBoard loss
    logging is optional.
    """

    def __init__(
        self, lib_name: str, error_mesg: Optional[str] = None
    ) -> None:
        """Remember which package is missing.

        Args:
            lib_name (str): name of the missing package, used in the message.
            error_mesg (Optional[str]): message of the original ImportError.
        """
        suffix = f" Original error message {error_mesg}" if error_mesg else ""
        object.__setattr__(
            self,
            "_message",
            f"naforest needs the optional package `{lib_name}` for this "
            "feature but it could not be imported. Install it (see the "
            f"installation instructions) to use the feature.{suffix}",
        )

    def _raise(self) -> None:
        raise ImportError(self._message)

    def __call__(self, *args: Any, **kwds: Any) -> Any:
        """Calling the stand-in raises the deferred ImportError."""
        self._raise()

    def __getattr__(self, __name: str) -> Any:
        """Attribute access raises the deferred ImportError."""
        self._raise()

    def __setattr__(self, __name: str, __value: Any) -> None:
        """Setting attributes raises the deferred ImportError."""
        self._raise()
