/** Book-page entry point: mount a quiz widget on every placeholder. */
import { mountAll } from "./widget-dom";

const TELEMETRY_BASE_URL =
  document.documentElement.dataset.telemetryUrl ?? "";

mountAll(TELEMETRY_BASE_URL);
