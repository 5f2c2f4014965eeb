import { ApiClient } from "./api";
import { AnnotatorApp } from "./app";

// Service origin: ?api=http://host:port overrides, default same-origin proxy.
const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8040";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");
const app = new AnnotatorApp(root, new ApiClient(base));
void app.start();
