"""Reward-curve emitters: a CSV of the series and a self-contained SVG chart."""

from __future__ import annotations

_WIDTH, _HEIGHT = 880, 440
_MARGIN_LEFT, _MARGIN_RIGHT = 70, 30
_MARGIN_TOP, _MARGIN_BOTTOM = 30, 50


def moving_average(values: list[float], window: int) -> list[float]:
    """Trailing mean over up to `window` points; short prefixes use what exists."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def _polyline(xs, ys, color, width):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'points="{pts}"/>')


def render_reward_svg(rewards: list[float], window: int) -> str:
    """An SVG line chart of per-episode reward and its moving average."""
    if not rewards:
        raise ValueError("need at least one reward to plot")
    avg = moving_average(rewards, window)
    lo = min(0.0, min(rewards))
    hi = max(1.0, max(rewards))
    span = hi - lo or 1.0
    n = len(rewards)

    def sx(i):
        frac = i / (n - 1) if n > 1 else 0.5
        return _MARGIN_LEFT + frac * (_WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT)

    def sy(v):
        frac = (v - lo) / span
        return _HEIGHT - _MARGIN_BOTTOM - frac * (_HEIGHT - _MARGIN_TOP - _MARGIN_BOTTOM)

    xs = [sx(i) for i in range(n)]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    # axes with five horizontal gridlines
    for i in range(5):
        v = lo + span * i / 4
        y = sy(v)
        parts.append(f'<line x1="{_MARGIN_LEFT}" y1="{y:.2f}" '
                     f'x2="{_WIDTH - _MARGIN_RIGHT}" y2="{y:.2f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{_MARGIN_LEFT - 8}" y="{y + 4:.2f}" '
                     f'text-anchor="end" font-size="12" '
                     f'font-family="sans-serif">{v:.2f}</text>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        ep = 1 + frac * (n - 1)
        x = sx(frac * (n - 1))
        parts.append(f'<text x="{x:.2f}" y="{_HEIGHT - _MARGIN_BOTTOM + 18}" '
                     f'text-anchor="middle" font-size="12" '
                     f'font-family="sans-serif">{ep:.0f}</text>')
    parts.append(f'<line x1="{_MARGIN_LEFT}" y1="{_MARGIN_TOP}" '
                 f'x2="{_MARGIN_LEFT}" y2="{_HEIGHT - _MARGIN_BOTTOM}" '
                 f'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{_MARGIN_LEFT}" y1="{_HEIGHT - _MARGIN_BOTTOM}" '
                 f'x2="{_WIDTH - _MARGIN_RIGHT}" y2="{_HEIGHT - _MARGIN_BOTTOM}" '
                 f'stroke="black" stroke-width="1"/>')
    parts.append(_polyline(xs, [sy(v) for v in rewards], "#9ecae1", 1.5))
    parts.append(_polyline(xs, [sy(v) for v in avg], "#08519c", 2.5))
    parts.append(f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 12}" '
                 f'text-anchor="middle" font-size="13" '
                 f'font-family="sans-serif">episode</text>')
    legend_x = _MARGIN_LEFT + 12
    parts.append(f'<rect x="{legend_x}" y="{_MARGIN_TOP + 4}" width="200" '
                 f'height="40" fill="white" stroke="#cccccc"/>')
    parts.append(f'<line x1="{legend_x + 8}" y1="{_MARGIN_TOP + 16}" '
                 f'x2="{legend_x + 36}" y2="{_MARGIN_TOP + 16}" '
                 f'stroke="#9ecae1" stroke-width="1.5"/>')
    parts.append(f'<text x="{legend_x + 42}" y="{_MARGIN_TOP + 20}" '
                 f'font-size="12" font-family="sans-serif">reward</text>')
    parts.append(f'<line x1="{legend_x + 8}" y1="{_MARGIN_TOP + 34}" '
                 f'x2="{legend_x + 36}" y2="{_MARGIN_TOP + 34}" '
                 f'stroke="#08519c" stroke-width="2.5"/>')
    parts.append(f'<text x="{legend_x + 42}" y="{_MARGIN_TOP + 38}" '
                 f'font-size="12" font-family="sans-serif">moving avg '
                 f'(window {window})</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_plot(rewards: list[float], window: int, svg_path, csv_path) -> None:
    """Write the series CSV (episode, reward, moving average) and the SVG."""
    avg = moving_average(rewards, window)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("episode,reward,moving_avg\n")
        for i, (r, a) in enumerate(zip(rewards, avg), start=1):
            fh.write(f"{i},{r!r},{a!r}\n")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(render_reward_svg(rewards, window))
