import sys
from typing import Generic, Iterable, Iterator, Optional, TypeVar
from tqdm import auto

from tof_mcl import default_logging
from tof_mcl.default_logging import logger

_T = TypeVar('_T')


class TqdmTrials(Generic[_T]):
    """
    Progress bar over a sequence of work items.

    The bar is shown only when the package logger lets the progress_bar
    level through. The last values sent with send appear as postfix.

    Args:
        items: the work items.
        desc: label of the bar.
        total: number of items when items has no length.
        update_frequency: number of postfix refreshes over the whole run.
    """

    def __init__(self,
                 items: Iterable[_T],
                 desc: Optional[str] = None,
                 total: Optional[int] = None,
                 update_frequency: int = 10) -> None:
        self.items = items
        self.desc = desc
        if total is None and hasattr(items, '__len__'):
            total = len(items)  # type: ignore[arg-type]
        self.total = total
        self.update_frequency = update_frequency
        self.disable_bar = (
            logger.level > default_logging.INFO_LEVELS.progress_bar
        )
        self._postfix: dict[str, float] = {}

    def __iter__(self) -> Iterator[_T]:
        with auto.tqdm(enumerate(self.items),
                       desc=self.desc,
                       total=self.total,
                       disable=self.disable_bar,
                       leave=False,
                       file=sys.stdout) as tqdm_items:
            update_interval = max((self.total or 1) // self.update_frequency,
                                  1)
            for index, item in tqdm_items:
                yield item
                if self._postfix and index % update_interval == 0:
                    tqdm_items.set_postfix(self._postfix)

    def send(self, monitor_dict: dict[str, float]) -> None:
        self._postfix = dict(monitor_dict)
        return

    def __len__(self) -> int:
        return self.total or 0
