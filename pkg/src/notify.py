# -*- coding: utf-8 -*-
"""
通知模块：训练 / 对比结束后发送飞书卡片或自定义 Webhook。

通知配置放在运行配置的 notify 段；发送失败只打印警告，不影响运行结果。
"""
import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional

import requests
from colorama import Fore, Style

from .errors import ConfigError

# 飞书卡片颜色
FEISHU_COLORS = ("blue", "green", "red", "orange", "purple", "indigo", "grey")


@dataclass
class NotifyConfig:
    """
    运行结束通知。

    feishu_content / webhook_body 中的 {task} 与 {summary} 会被替换为命令名与结果摘要。
    """
    enabled: bool = False
    feishu_webhook: str = ""
    feishu_title: str = "预训练完成通知"
    feishu_content: str = "{task} 已完成\n{summary}"
    feishu_color: str = "blue"
    webhook_url: str = ""
    webhook_headers: str = '{"Content-Type": "application/json"}'
    webhook_body: str = '{"message": "{task} 已完成"}'
    timeout: float = 30.0

    def validate(self) -> tuple[bool, str]:
        if self.feishu_color not in FEISHU_COLORS:
            return False, f"飞书卡片颜色无效: {self.feishu_color} (可选: {', '.join(FEISHU_COLORS)})"
        if self.timeout <= 0:
            return False, f"timeout 必须为正数: {self.timeout}"
        if self.enabled and not (self.feishu_webhook or self.webhook_url):
            return False, "已开启通知，但 feishu_webhook 与 webhook_url 都为空"
        return True, ""

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "NotifyConfig":
        data = data or {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"notify 配置包含未知字段: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def send_feishu_notification(
    webhook_url: str,
    title: str,
    content: str,
    color: str = "blue",
    footer: str = "来自小雪预训练工坊",
    timeout: float = 30.0,
) -> bool:
    """
    发送飞书机器人卡片消息。

    Args:
        webhook_url: 飞书 Webhook URL
        title: 卡片标题
        content: 消息内容 (lark_md 格式)
        color: 卡片头部颜色
        footer: 卡片底部备注

    Returns:
        bool: 发送是否成功
    """
    if not webhook_url:
        print(f"{Fore.YELLOW}[警告] 飞书 Webhook URL 为空，跳过发送{Style.RESET_ALL}")
        return False

    message = {
        "msg_type": "interactive",
        "card": {
            "config": {"wide_screen_mode": True},
            "header": {
                "title": {"tag": "plain_text", "content": title},
                "template": color,
            },
            "elements": [
                {"tag": "div", "text": {"tag": "lark_md", "content": content}},
                {"tag": "hr"},
                {"tag": "note", "elements": [{"tag": "plain_text", "content": footer}]},
            ],
        },
    }

    try:
        response = requests.post(
            webhook_url,
            headers={"Content-Type": "application/json"},
            data=json.dumps(message, ensure_ascii=False).encode("utf-8"),
            timeout=timeout,
        )
        if response.status_code == 200:
            result = response.json()
            if result.get("code") == 0 or result.get("StatusCode") == 0:
                print(f"{Fore.GREEN}[成功] 飞书通知发送成功{Style.RESET_ALL}")
                return True
            print(f"{Fore.YELLOW}[警告] 飞书返回错误: {result}{Style.RESET_ALL}")
            return False
        print(f"{Fore.YELLOW}[警告] HTTP 状态码: {response.status_code} - {response.text[:200]}{Style.RESET_ALL}")
        return False
    except requests.exceptions.Timeout:
        print(f"{Fore.YELLOW}[警告] 飞书通知请求超时{Style.RESET_ALL}")
        return False
    except (requests.exceptions.RequestException, ValueError) as e:
        print(f"{Fore.YELLOW}[警告] 飞书通知发送失败: {e}{Style.RESET_ALL}")
        return False


def send_webhook_notification(
    url: str,
    headers_json: Optional[str] = None,
    body: Optional[Dict[str, Any]] = None,
    timeout: float = 30.0,
) -> bool:
    """
    发送自定义 Webhook POST 请求。

    Args:
        url: POST 请求 URL
        headers_json: 请求头 JSON 字符串
        body: 请求体

    Returns:
        bool: 发送是否成功
    """
    if not url:
        print(f"{Fore.YELLOW}[警告] Webhook URL 为空，跳过发送{Style.RESET_ALL}")
        return False

    final_headers = {"Content-Type": "application/json"}
    if headers_json:
        try:
            parsed = json.loads(headers_json)
            if isinstance(parsed, dict):
                final_headers.update(parsed)
        except json.JSONDecodeError as e:
            print(f"{Fore.YELLOW}[警告] Headers JSON 解析失败: {e}{Style.RESET_ALL}")
            return False

    try:
        response = requests.post(url, headers=final_headers, json=body or {}, timeout=timeout)
        if 200 <= response.status_code < 300:
            print(f"{Fore.GREEN}[成功] Webhook 请求发送成功{Style.RESET_ALL}")
            return True
        print(f"{Fore.YELLOW}[警告] Webhook 返回状态码 {response.status_code}{Style.RESET_ALL}")
        return False
    except requests.exceptions.Timeout:
        print(f"{Fore.YELLOW}[警告] Webhook 请求超时{Style.RESET_ALL}")
        return False
    except requests.exceptions.RequestException as e:
        print(f"{Fore.YELLOW}[警告] Webhook 请求失败: {e}{Style.RESET_ALL}")
        return False


def format_summary(summary: Dict[str, Any]) -> str:
    return "\n".join(f"{key}: {value}" for key, value in summary.items())


def send_run_notification(config: NotifyConfig, task_name: str, summary: Dict[str, Any]) -> Dict[str, bool]:
    """
    按配置发送运行结束通知。

    Returns:
        渠道名 -> 是否成功 (未启用时为空字典)
    """
    if not config.enabled:
        return {}

    print(f"\n{Fore.CYAN}[自动通知] 正在发送运行完成通知...{Style.RESET_ALL}")
    text = format_summary(summary)
    results = {}
    if config.feishu_webhook:
        content = config.feishu_content.replace("{task}", task_name).replace("{summary}", text)
        results["feishu"] = send_feishu_notification(
            config.feishu_webhook, config.feishu_title, content, config.feishu_color, timeout=config.timeout
        )
    if config.webhook_url:
        raw_body = config.webhook_body.replace("{task}", task_name)
        try:
            body = json.loads(raw_body)
        except json.JSONDecodeError as e:
            print(f"{Fore.YELLOW}[警告] Body JSON 解析失败: {e}{Style.RESET_ALL}")
            results["webhook"] = False
        else:
            if isinstance(body, dict):
                body.setdefault("summary", summary)
            results["webhook"] = send_webhook_notification(
                config.webhook_url, config.webhook_headers, body, timeout=config.timeout
            )
    return results
