import { boot } from "./app.js";

boot().catch((err) => {
  document.getElementById("means")!.textContent = `failed to load: ${err}`;
});
