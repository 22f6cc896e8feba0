declare module "swagger-ui-dist/swagger-ui-bundle.js";
declare module "swagger-ui-dist/swagger-ui.css";
