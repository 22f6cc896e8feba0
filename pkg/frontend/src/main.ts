import "./style.css";
import { App } from "./app";

const params = new URLSearchParams(window.location.search);
const base =
  params.get("gateway") ?? `${window.location.protocol}//${window.location.hostname}:8700`;

const root = document.getElementById("root");
if (!root) throw new Error("missing #root element");

const app = new App(root, { baseUrl: base });
void app.start();
