"""Discord通知用の最小ユーティリティ。"""

from __future__ import annotations

import logging

import requests

LOGGER = logging.getLogger(__name__)

DISCORD_SAFE_LIMIT = 1900


def send_discord_message(webhook_url: str, content: str) -> None:
    """
    Discord Webhook にテキストメッセージを送信する。

    Args:
        webhook_url: Discord Webhook URL。
        content: 送信本文。

    Raises:
        requests.exceptions.HTTPError:
            Discord API がエラーを返した場合。
    """
    payload = {"content": content}
    response = requests.post(webhook_url, json=payload, timeout=15)
    response.raise_for_status()


def build_run_message(summary: dict) -> str:
    """Render a finished run summary (`- key: value` lines), trimmed to Discord's limit."""
    lines = [f"tensor completion {summary.get('status', 'finished')}"]
    for key, value in summary.items():
        if key == "status":
            continue
        lines.append(f"- {key}: {value}")
    content = "\n".join(lines)
    if len(content) > DISCORD_SAFE_LIMIT:
        content = content[: DISCORD_SAFE_LIMIT - 4] + "\n..."
    return content


def notify_run(webhook_url: str | None, summary: dict) -> None:
    """Send a run summary; a missing URL or a failed request only logs a warning."""
    if not webhook_url:
        LOGGER.debug("DISCORD_WEBHOOK_URL is not set; skipping run notification")
        return
    try:
        send_discord_message(webhook_url, build_run_message(summary))
    except requests.RequestException as exc:
        LOGGER.warning("Failed to send Discord run notification: %s", exc)
