import { startApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const service = params.get("service") ?? "http://127.0.0.1:8789";

startApp(service).catch((err) => {
  const status = document.getElementById("status");
  if (status) {
    status.textContent = `failed to start: ${err}`;
  }
});
