"""
Pagination over replicate indices.

A page of samples is a window of replicate indices; since replicate i is
driven by its own stream, any page can be drawn without drawing the pages
before it.
"""

from typing import Any, Dict, List, Tuple, TypeVar

T = TypeVar("T")


def validate_pagination_params(page: int, per_page: int, max_per_page: int = 100) -> Tuple[int, int]:
    """
    Clamps page to at least 1 and per_page to [1, max_per_page] (10 when below 1).
    """
    page = max(page, 1)
    if per_page < 1:
        per_page = 10
    per_page = min(per_page, max_per_page)
    return page, per_page


def replicate_window(page: int, per_page: int, total: int) -> Tuple[int, int]:
    """
    Replicate range of a page.

    Args:
        page (int): Page number, from 1.
        per_page (int): Replicates per page.
        total (int): Number of replicates addressable.

    Returns:
        Tuple[int, int]: (first_index, count); count is 0 past the last page.
    """
    first = (page - 1) * per_page
    return first, max(0, min(per_page, total - first))


def paginate_response(items: List[T], page: int, per_page: int, total: int) -> Dict[str, Any]:
    """Wraps one page of already drawn items."""
    return {"page": page, "per_page": per_page, "total": total, "items": items}
