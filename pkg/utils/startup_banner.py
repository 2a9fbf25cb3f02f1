"""
Trawlkit Startup Banner Module
Displays the banner and system information when the service starts and stops.
"""

import sys
from datetime import datetime

import numpy as np
import scipy
from rich.console import Console, Group
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

VERSION = "0.1.0"

BANNER = r"""
 _                      _ _    _ _
| |_ _ __ __ ___      _| | | _(_) |_
| __| '__/ _` \ \ /\ / / | |/ / | __|
| |_| | | (_| |\ V  V /| |   <| | |_
 \__|_|  \__,_| \_/\_/ |_|_|\_\_|\__|
"""

FEATURES = (
    ("Simulate", "slice-grid simulation of trawl processes"),
    ("Estimate", "nonparametric trawl function, derivative and variance"),
    ("Slices", "Lebesgue measures of trawl-set intersections"),
    ("Forecast", "slice-based point forecasts and Diebold-Mariano tests"),
)

console = Console(stderr=True)


def get_system_info():
    """Interpreter, library and platform details shown under SYSTEM INFO."""
    return {
        "python_version": ".".join(str(v) for v in sys.version_info[:3]),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "platform": sys.platform,
        "startup_time": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
    }


def build_startup_banner(host="localhost", port=8000, jobs=None):
    """
    The startup banner as a renderable.

    Args:
        host (str): Server host address
        port (int): FastAPI server port
        jobs (int, optional): Worker count used for Monte Carlo and forecasts
    """
    info = get_system_info()
    features = Table.grid(padding=(0, 2))
    for name, text in FEATURES:
        features.add_row(f"[green]✓ {name}[/green]", text)

    server = Table.grid(padding=(0, 2))
    server.add_row("FastAPI Server:", f"[green]http://{host}:{port}[/green]")
    server.add_row("API Documentation:", f"[green]http://{host}:{port}/docs[/green]")
    server.add_row("Status:", f"[green]http://{host}:{port}/status[/green]")
    if jobs:
        server.add_row("Workers:", f"[green]{jobs}[/green]")

    system = Table.grid(padding=(0, 2))
    system.add_row("Python Version:", info["python_version"])
    system.add_row("NumPy / SciPy:", f"{info['numpy_version']} / {info['scipy_version']}")
    system.add_row("Platform:", info["platform"])
    system.add_row("Started:", info["startup_time"])

    return Panel(
        Group(
            Text(BANNER, style="bold cyan"),
            Text("🔧 CORE FEATURES", style="blue"), features, "",
            Text("🌐 SERVER STATUS", style="cyan"), server, "",
            Text("⚙️  SYSTEM INFO", style="yellow"), system,
        ),
        title=f"Trawlkit v{VERSION}",
        border_style="magenta",
    )


def display_startup_banner(host="localhost", port=8000, jobs=None):
    console.print(build_startup_banner(host, port, jobs))


def display_shutdown_banner():
    console.print(Panel(Text("🛑 Trawlkit Server Shutting Down...", style="bold yellow"), border_style="cyan"))
